#pragma once

#include <qent/analysis.hpp>
#include <qent/datagen.hpp>
#include <qent/dataset_io.hpp>
#include <qent/error.hpp>
#include <qent/experiments.hpp>
#include <qent/measurement.hpp>
#include <qent/measures.hpp>
#include <qent/nnet.hpp>
#include <qent/rng.hpp>
#include <qent/states.hpp>

namespace qent {
inline constexpr const char* kVersion = "0.1.0";
}
