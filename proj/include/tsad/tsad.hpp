#pragma once

#include "tsad/autodiff.hpp"
#include "tsad/checkpoint.hpp"
#include "tsad/data_io.hpp"
#include "tsad/decomposition.hpp"
#include "tsad/detect.hpp"
#include "tsad/encoder.hpp"
#include "tsad/errors.hpp"
#include "tsad/loss.hpp"
#include "tsad/matrix.hpp"
#include "tsad/patching.hpp"
#include "tsad/report.hpp"
#include "tsad/run_config.hpp"
#include "tsad/train.hpp"
