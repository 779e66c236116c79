#pragma once

#include "shadoc/ad/conv.hpp"
#include "shadoc/ad/elementwise.hpp"
#include "shadoc/ad/kernels.hpp"
#include "shadoc/ad/linalg.hpp"
#include "shadoc/ad/spatial.hpp"
#include "shadoc/ad/tensor.hpp"
