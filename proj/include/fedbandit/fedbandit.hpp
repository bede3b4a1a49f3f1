#pragma once

#include "fedbandit/bandit.hpp"
#include "fedbandit/bounds.hpp"
#include "fedbandit/channel.hpp"
#include "fedbandit/core.hpp"
#include "fedbandit/env.hpp"
#include "fedbandit/harness.hpp"
#include "fedbandit/io.hpp"
#include "fedbandit/rng.hpp"
