#pragma once

#include "crossmom/accumulator.hpp"
#include "crossmom/compensated_sum.hpp"
#include "crossmom/csv.hpp"
#include "crossmom/errors.hpp"
#include "crossmom/grand_mean.hpp"
#include "crossmom/key_index.hpp"
#include "crossmom/mcmc_baseline.hpp"
#include "crossmom/model.hpp"
#include "crossmom/moment_estimator.hpp"
#include "crossmom/predictor.hpp"
#include "crossmom/sidecar.hpp"
#include "crossmom/streaming_pass.hpp"
#include "crossmom/variance_estimator.hpp"
