// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "errors.hpp"
#include "log.hpp"
#include "random.hpp"
#include "parallel.hpp"
#include "channel_sim.hpp"
#include "adp.hpp"
#include "kernels.hpp"
#include "gpr.hpp"
#include "gpr_train.hpp"
#include "autoencoder.hpp"
#include "pipeline.hpp"
#include "io.hpp"
