#pragma once
// Umbrella header.
#include "faultface/adversarial.hpp"
#include "faultface/behavior.hpp"
#include "faultface/classifier.hpp"
#include "faultface/config.hpp"
#include "faultface/dataset.hpp"
#include "faultface/error.hpp"
#include "faultface/metrics.hpp"
#include "faultface/pgm.hpp"
#include "faultface/pipeline.hpp"
#include "faultface/portrait.hpp"
#include "faultface/rng.hpp"
#include "faultface/synthetic.hpp"
#include "faultface/wavelet.hpp"
