#pragma once

// Umbrella header for the whole library.

#include "dyck/alphabet.hpp"
#include "dyck/autodiff.hpp"
#include "dyck/batch.hpp"
#include "dyck/checkpoint.hpp"
#include "dyck/compat.hpp"
#include "dyck/dataset.hpp"
#include "dyck/errors.hpp"
#include "dyck/eval.hpp"
#include "dyck/grammar.hpp"
#include "dyck/interp.hpp"
#include "dyck/lstm.hpp"
#include "dyck/model.hpp"
#include "dyck/optim.hpp"
#include "dyck/oracle.hpp"
#include "dyck/params.hpp"
#include "dyck/rng.hpp"
#include "dyck/sa.hpp"
#include "dyck/sampler.hpp"
#include "dyck/tensor.hpp"
#include "dyck/train.hpp"
#include "dyck/util.hpp"
