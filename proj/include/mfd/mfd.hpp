#pragma once

// Everything in one include.

#include "mfd/augment.hpp"
#include "mfd/box.hpp"
#include "mfd/checkpoint.hpp"
#include "mfd/conditions.hpp"
#include "mfd/dataset.hpp"
#include "mfd/error.hpp"
#include "mfd/gemm.hpp"
#include "mfd/haar.hpp"
#include "mfd/image.hpp"
#include "mfd/image_io.hpp"
#include "mfd/inference.hpp"
#include "mfd/layers.hpp"
#include "mfd/mask_class.hpp"
#include "mfd/metrics.hpp"
#include "mfd/network.hpp"
#include "mfd/pipeline.hpp"
#include "mfd/random.hpp"
#include "mfd/samples.hpp"
#include "mfd/tensor.hpp"
#include "mfd/train.hpp"
