#pragma once

#include "shadoc/imaging/color.hpp"
#include "shadoc/imaging/image.hpp"
#include "shadoc/imaging/io.hpp"
#include "shadoc/imaging/metrics.hpp"
#include "shadoc/imaging/otsu.hpp"
