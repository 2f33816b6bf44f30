#pragma once

#include "attributes.hpp"
#include "corpus.hpp"
#include "density_ratio.hpp"
#include "error.hpp"
#include "estimator.hpp"
#include "evaluation.hpp"
#include "logistic.hpp"
#include "random.hpp"
#include "report.hpp"
#include "stats.hpp"
#include "synth_oracle.hpp"
#include "text.hpp"
#include "weights.hpp"
