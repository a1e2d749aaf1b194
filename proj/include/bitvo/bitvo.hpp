#pragma once

#include "bitvo/config.hpp"
#include "bitvo/datasets.hpp"
#include "bitvo/descriptor.hpp"
#include "bitvo/error.hpp"
#include "bitvo/evaluation.hpp"
#include "bitvo/geometry.hpp"
#include "bitvo/image.hpp"
#include "bitvo/image_io.hpp"
#include "bitvo/imgproc.hpp"
#include "bitvo/parallel.hpp"
#include "bitvo/pipeline.hpp"
#include "bitvo/solver.hpp"
#include "bitvo/synthetic.hpp"
#include "bitvo/trajectory.hpp"
