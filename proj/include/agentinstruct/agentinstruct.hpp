#pragma once

// Umbrella header for the offline pipeline; add agentinstruct/http.hpp for
// the live HTTP backends.

#include "agentinstruct/agent.hpp"
#include "agentinstruct/evidence.hpp"
#include "agentinstruct/gateway.hpp"
#include "agentinstruct/harness.hpp"
#include "agentinstruct/metrics.hpp"
#include "agentinstruct/prompts.hpp"
#include "agentinstruct/runner.hpp"
#include "agentinstruct/task.hpp"
#include "agentinstruct/text.hpp"
#include "agentinstruct/util.hpp"
