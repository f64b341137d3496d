#pragma once

#include "recaudit/error.hpp"
#include "recaudit/dataset.hpp"
#include "recaudit/mf.hpp"
#include "recaudit/policy.hpp"
#include "recaudit/distance.hpp"
#include "recaudit/objective.hpp"
#include "recaudit/metrics.hpp"
#include "recaudit/blackbox.hpp"
#include "recaudit/optim.hpp"
#include "recaudit/audit.hpp"
#include "recaudit/stats.hpp"
#include "recaudit/synth.hpp"
#include "recaudit/harness.hpp"
