#pragma once

#include "diffcon/controller/composed.hpp"
#include "diffcon/controller/fourier.hpp"
#include "diffcon/controller/lora.hpp"
#include "diffcon/controller/side_net.hpp"
#include "diffcon/diffusion/data.hpp"
#include "diffcon/diffusion/loss.hpp"
#include "diffcon/diffusion/model.hpp"
#include "diffcon/diffusion/ops.hpp"
#include "diffcon/diffusion/sampler.hpp"
#include "diffcon/diffusion/score_model.hpp"
#include "diffcon/diffusion/train.hpp"
#include "diffcon/errors.hpp"
#include "diffcon/fdiv.hpp"
#include "diffcon/harness/commands.hpp"
#include "diffcon/harness/config.hpp"
#include "diffcon/harness/csv.hpp"
#include "diffcon/harness/eval.hpp"
#include "diffcon/lsmdp/chain.hpp"
#include "diffcon/lsmdp/gauss_tilt.hpp"
#include "diffcon/lsmdp/oracle.hpp"
#include "diffcon/numkit/adam.hpp"
#include "diffcon/numkit/checkpoint.hpp"
#include "diffcon/numkit/embedding.hpp"
#include "diffcon/numkit/grad_check.hpp"
#include "diffcon/numkit/matrix.hpp"
#include "diffcon/numkit/mlp.hpp"
#include "diffcon/parallel.hpp"
#include "diffcon/rlft/advantage.hpp"
#include "diffcon/rlft/finetune.hpp"
#include "diffcon/rlft/policy_gradient.hpp"
#include "diffcon/rlft/reward.hpp"
#include "diffcon/rlft/rollout.hpp"
#include "diffcon/rlft/rwl.hpp"
#include "diffcon/rlft/tabular.hpp"
#include "diffcon/rng.hpp"
#include "diffcon/schedule.hpp"
