#pragma once

// Umbrella header.
#include "ars/error.hpp"
#include "ars/linalg.hpp"
#include "ars/rng.hpp"
#include "ars/policy.hpp"
#include "ars/env.hpp"
#include "ars/lqr.hpp"
#include "ars/executor.hpp"
#include "ars/search.hpp"
#include "ars/harness.hpp"
