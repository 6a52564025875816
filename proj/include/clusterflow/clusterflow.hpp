#pragma once

#include "clusterflow/rng.hpp"
#include "clusterflow/gap_sequence.hpp"
#include "clusterflow/laws.hpp"
#include "clusterflow/renewal.hpp"
#include "clusterflow/forward.hpp"
#include "clusterflow/reverse.hpp"
#include "clusterflow/stats.hpp"
#include "clusterflow/parallel.hpp"
#include "clusterflow/analysis.hpp"
#include "clusterflow/io.hpp"
#include "clusterflow/acceptance.hpp"
#include "clusterflow/config.hpp"
