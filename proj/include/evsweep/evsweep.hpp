#pragma once

// Event-based space-sweep multi-view stereo: umbrella header.

#include "evsweep/detection.hpp"
#include "evsweep/dsi.hpp"
#include "evsweep/errors.hpp"
#include "evsweep/event_io.hpp"
#include "evsweep/fixed_point.hpp"
#include "evsweep/geometry.hpp"
#include "evsweep/perf_model.hpp"
#include "evsweep/pipeline.hpp"
#include "evsweep/quantized.hpp"
#include "evsweep/sweep.hpp"
#include "evsweep/synth.hpp"
