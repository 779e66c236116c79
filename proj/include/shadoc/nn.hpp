#pragma once

#include "shadoc/nn/blocks.hpp"
#include "shadoc/nn/cfr.hpp"
#include "shadoc/nn/config.hpp"
#include "shadoc/nn/layers.hpp"
#include "shadoc/nn/model.hpp"
#include "shadoc/nn/params.hpp"
#include "shadoc/nn/std_detector.hpp"
