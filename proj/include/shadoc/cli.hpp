#pragma once

#include "shadoc/cli/commands.hpp"
#include "shadoc/cli/config.hpp"
#include "shadoc/cli/dataset.hpp"
