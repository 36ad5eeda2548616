#pragma once

#include "aseg/agent.hpp"
#include "aseg/autograd.hpp"
#include "aseg/checkpoint.hpp"
#include "aseg/config.hpp"
#include "aseg/data.hpp"
#include "aseg/kernels.hpp"
#include "aseg/memory.hpp"
#include "aseg/metrics.hpp"
#include "aseg/model.hpp"
#include "aseg/objective.hpp"
#include "aseg/optim.hpp"
#include "aseg/png_io.hpp"
#include "aseg/policy.hpp"
#include "aseg/render.hpp"
#include "aseg/retina.hpp"
#include "aseg/tensor.hpp"
#include "aseg/trace_io.hpp"
#include "aseg/train.hpp"
