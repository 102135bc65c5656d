#pragma once

#include "graphgen/assess.hpp"
#include "graphgen/cassette.hpp"
#include "graphgen/config.hpp"
#include "graphgen/corpus.hpp"
#include "graphgen/error.hpp"
#include "graphgen/http_backend.hpp"
#include "graphgen/kg.hpp"
#include "graphgen/llm.hpp"
#include "graphgen/metrics.hpp"
#include "graphgen/pipeline.hpp"
#include "graphgen/prompts.hpp"
#include "graphgen/qagen.hpp"
#include "graphgen/traverse.hpp"
