#pragma once

// Umbrella header for the whole library.

#include "trance/archive.hpp"
#include "trance/attribution.hpp"
#include "trance/bessel.hpp"
#include "trance/container.hpp"
#include "trance/error.hpp"
#include "trance/faith_report.hpp"
#include "trance/faithfulness.hpp"
#include "trance/heatmap.hpp"
#include "trance/image_io.hpp"
#include "trance/linalg.hpp"
#include "trance/nmf.hpp"
#include "trance/parallel.hpp"
#include "trance/pca.hpp"
#include "trance/pipeline.hpp"
#include "trance/prototypes.hpp"
#include "trance/reducer.hpp"
#include "trance/spectral.hpp"
#include "trance/synthetic.hpp"
#include "trance/tensor_io.hpp"
#include "trance/vae.hpp"
