#pragma once

#include "synthcell/augment.hpp"
#include "synthcell/background.hpp"
#include "synthcell/coco.hpp"
#include "synthcell/compose.hpp"
#include "synthcell/config.hpp"
#include "synthcell/error.hpp"
#include "synthcell/imgcore.hpp"
#include "synthcell/instances.hpp"
#include "synthcell/manifest.hpp"
#include "synthcell/metrics.hpp"
#include "synthcell/parallel.hpp"
#include "synthcell/pipeline.hpp"
#include "synthcell/png_io.hpp"
#include "synthcell/rng.hpp"
#include "synthcell/scorer.hpp"
#include "synthcell/search.hpp"
#include "synthcell/subprocess.hpp"
