#pragma once

#include "vpnet/core.hpp"
#include "vpnet/dataset.hpp"
#include "vpnet/hermite.hpp"
#include "vpnet/io.hpp"
#include "vpnet/nn.hpp"
#include "vpnet/synth.hpp"
#include "vpnet/training.hpp"
#include "vpnet/vp.hpp"
