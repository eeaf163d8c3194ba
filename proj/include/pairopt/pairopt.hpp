#pragma once

#include "pairopt/camera.hpp"
#include "pairopt/detections.hpp"
#include "pairopt/eval.hpp"
#include "pairopt/geometry.hpp"
#include "pairopt/kitti_io.hpp"
#include "pairopt/optimizer.hpp"
#include "pairopt/pairing.hpp"
#include "pairopt/synthetic.hpp"
#include "pairopt/uncertainty.hpp"
