#pragma once

// Umbrella header: the whole library. The HTTP backend is included too; code
// that only needs the mock can include the individual headers instead.

#include "ctxrep/context_model.hpp"
#include "ctxrep/error.hpp"
#include "ctxrep/harness/dataset.hpp"
#include "ctxrep/harness/records.hpp"
#include "ctxrep/harness/report.hpp"
#include "ctxrep/harness/runner.hpp"
#include "ctxrep/harness/studies.hpp"
#include "ctxrep/http_model.hpp"
#include "ctxrep/model_client.hpp"
#include "ctxrep/optimal_order.hpp"
#include "ctxrep/prompt_builder.hpp"
#include "ctxrep/random.hpp"
#include "ctxrep/scoring.hpp"
#include "ctxrep/synthetic_chains.hpp"
