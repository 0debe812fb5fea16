#pragma once

#include "hetgp/errors.hpp"
#include "hetgp/kernel.hpp"
#include "hetgp/linalg.hpp"
#include "hetgp/repdesign.hpp"
#include "hetgp/optim.hpp"
#include "hetgp/hom.hpp"
#include "hetgp/dense.hpp"
#include "hetgp/het.hpp"
#include "hetgp/sk.hpp"
#include "hetgp/metrics.hpp"
#include "hetgp/rng.hpp"
#include "hetgp/csv.hpp"
#include "hetgp/sims.hpp"
#include "hetgp/serialize.hpp"
#include "hetgp/bench.hpp"

namespace hetgp {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace hetgp
