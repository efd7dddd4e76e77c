#pragma once

#include "dcissim/types.hpp"
#include "dcissim/fft.hpp"
#include "dcissim/lti.hpp"
#include "dcissim/excitation.hpp"
#include "dcissim/isp.hpp"
#include "dcissim/sim_id.hpp"
#include "dcissim/covariance.hpp"
#include "dcissim/metrics.hpp"
#include "dcissim/io.hpp"
#include "dcissim/harness.hpp"
