#ifndef DASS_ALL_HPP_
#define DASS_ALL_HPP_

#include "dass/common.hpp"
#include "dass/net.hpp"
#include "dass/envs.hpp"
#include "dass/policy.hpp"
#include "dass/ppo.hpp"
#include "dass/dass.hpp"
#include "dass/distill.hpp"
#include "dass/refine.hpp"
#include "dass/config.hpp"
#include "dass/eval.hpp"
#include "dass/run_config.hpp"

#endif  // DASS_ALL_HPP_
