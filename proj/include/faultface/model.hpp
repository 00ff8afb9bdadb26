#pragma once
#include "faultface/nn/layers.hpp"
#include "faultface/nn/params.hpp"

namespace faultface {

/// A network description with its parameters.
struct Net {
  nn::NetworkSpec spec;
  nn::ParamSet params;
};

}  // namespace faultface
