#pragma once

#include "bbandit/core.hpp"
#include "bbandit/env.hpp"
#include "bbandit/linalg.hpp"
#include "bbandit/completion.hpp"
#include "bbandit/union_find.hpp"
#include "bbandit/kmeans.hpp"
#include "bbandit/policy.hpp"
#include "bbandit/blattice.hpp"
#include "bbandit/bbuic.hpp"
#include "bbandit/baselines.hpp"
#include "bbandit/harness.hpp"
#include "bbandit/config.hpp"
