#pragma once

// Umbrella header: the whole toolkit in one include.

#include "crackclf/adversary.hpp"
#include "crackclf/attention.hpp"
#include "crackclf/autograd.hpp"
#include "crackclf/checkpoint.hpp"
#include "crackclf/common.hpp"
#include "crackclf/complexity.hpp"
#include "crackclf/config.hpp"
#include "crackclf/container.hpp"
#include "crackclf/conv_ops.hpp"
#include "crackclf/data_io.hpp"
#include "crackclf/metrics.hpp"
#include "crackclf/nn.hpp"
#include "crackclf/segnet.hpp"
#include "crackclf/supervision.hpp"
#include "crackclf/synthetic.hpp"
#include "crackclf/tensor.hpp"
#include "crackclf/trainer.hpp"
