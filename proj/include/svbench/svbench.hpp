#pragma once

#include "svbench/errors.hpp"
#include "svbench/random.hpp"
#include "svbench/util.hpp"
#include "svbench/provenance.hpp"
#include "svbench/manifest.hpp"
#include "svbench/pair_sampler.hpp"
#include "svbench/audio.hpp"
#include "svbench/prompt_dataset.hpp"
#include "svbench/response_parser.hpp"
#include "svbench/inference.hpp"
#include "svbench/metrics.hpp"
#include "svbench/baseline.hpp"
#include "svbench/pipeline.hpp"
