#pragma once

#include "adam.hpp"
#include "autodiff.hpp"
#include "baselines.hpp"
#include "checkpoint.hpp"
#include "config.hpp"
#include "env.hpp"
#include "errors.hpp"
#include "evaluation.hpp"
#include "geometry.hpp"
#include "instance.hpp"
#include "json_text.hpp"
#include "parallel.hpp"
#include "plan_io.hpp"
#include "policy.hpp"
#include "render.hpp"
#include "rng.hpp"
#include "rollout.hpp"
#include "training.hpp"
