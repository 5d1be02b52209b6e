#pragma once

#include "psram/array.hpp"
#include "psram/common.hpp"
#include "psram/config_io.hpp"
#include "psram/cp.hpp"
#include "psram/mapping.hpp"
#include "psram/perf.hpp"
#include "psram/quantize.hpp"
#include "psram/schedule.hpp"
#include "psram/svg.hpp"
#include "psram/tensor.hpp"
#include "psram/tensor_io.hpp"
