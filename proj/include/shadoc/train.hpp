#pragma once

#include "shadoc/train/adam.hpp"
#include "shadoc/train/augment.hpp"
#include "shadoc/train/checkpoint.hpp"
#include "shadoc/train/losses.hpp"
#include "shadoc/train/model_io.hpp"
#include "shadoc/train/trainer.hpp"
