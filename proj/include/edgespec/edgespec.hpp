#pragma once

#include "edgespec/bench.hpp"
#include "edgespec/cube.hpp"
#include "edgespec/detectors.hpp"
#include "edgespec/error.hpp"
#include "edgespec/evaluation.hpp"
#include "edgespec/io.hpp"
#include "edgespec/labeling.hpp"
#include "edgespec/pipeline.hpp"
#include "edgespec/preprocess.hpp"
#include "edgespec/synthetic.hpp"
#include "edgespec/version.hpp"
