// Builds acceptance-cache fixtures by tag so long trainings can run in
// parallel processes before the acceptance suite:
//   prepare_fixture data:d1 data:d2
//   prepare_fixture model:d2_sa_plus_s1 model:d2_sa_minus_s1
//   prepare_fixture list

#include <cstdio>
#include <iostream>
#include <string>

#include "fixtures.hpp"

int main(int argc, char** argv) {
  if (argc < 2) {
    std::fprintf(stderr, "usage: prepare_fixture (list | data:<tag> | model:<tag>)...\n");
    return 2;
  }
  try {
    for (int i = 1; i < argc; ++i) {
      const std::string arg = argv[i];
      if (arg == "list") {
        std::printf("data: d1 d2\nmodels:");
        for (const auto& t : fixtures::d1_tags()) std::printf(" %s", t.c_str());
        for (const auto& t : fixtures::d2_sa_tags(true)) std::printf(" %s", t.c_str());
        for (const auto& t : fixtures::d2_sa_tags(false)) std::printf(" %s", t.c_str());
        std::printf("\n");
      } else if (arg.rfind("data:", 0) == 0) {
        std::printf("%s -> %s\n", arg.c_str(), fixtures::ensure_dataset(arg.substr(5)).c_str());
      } else if (arg.rfind("model:", 0) == 0) {
        std::printf("%s -> %s\n", arg.c_str(),
                    fixtures::ensure_model(arg.substr(6), &std::cout).c_str());
      } else {
        std::fprintf(stderr, "unknown fixture %s\n", arg.c_str());
        return 2;
      }
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
