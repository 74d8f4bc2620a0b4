#pragma once

#include "ddr/error.hpp"
#include "ddr/eval_io.hpp"
#include "ddr/mb_ddr.hpp"
#include "ddr/nav_core.hpp"
#include "ddr/nn/model_bundle.hpp"
#include "ddr/nn/models.hpp"
#include "ddr/nn/ops.hpp"
#include "ddr/nn/tensor.hpp"
#include "ddr/pipelines.hpp"
#include "ddr/session.hpp"
