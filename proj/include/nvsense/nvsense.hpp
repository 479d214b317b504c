#pragma once

#include "nvsense/config.hpp"
#include "nvsense/ensemble.hpp"
#include "nvsense/errors.hpp"
#include "nvsense/experiments.hpp"
#include "nvsense/fit.hpp"
#include "nvsense/geometry.hpp"
#include "nvsense/report.hpp"
#include "nvsense/rng.hpp"
#include "nvsense/sequence.hpp"
#include "nvsense/spindynamics.hpp"
#include "nvsense/version.hpp"
