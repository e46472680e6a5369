#pragma once

#include "textdial/analytics.hpp"
#include "textdial/corpus.hpp"
#include "textdial/dialogue.hpp"
#include "textdial/error.hpp"
#include "textdial/metrics.hpp"
#include "textdial/providers/mock.hpp"
#include "textdial/providers/provider.hpp"
#include "textdial/synthesis.hpp"
#include "textdial/text.hpp"
