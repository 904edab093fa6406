#pragma once

#include "adapter.hpp"
#include "config.hpp"
#include "dataset.hpp"
#include "error.hpp"
#include "eval.hpp"
#include "generation.hpp"
#include "index.hpp"
#include "knowledge.hpp"
#include "metrics.hpp"
#include "pipeline.hpp"
#include "region.hpp"
#include "resolution.hpp"
#include "taxonomy.hpp"
