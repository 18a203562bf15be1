#pragma once

#include "lorabam/bam_monitor.hpp"
#include "lorabam/baselines.hpp"
#include "lorabam/calibration.hpp"
#include "lorabam/clustering.hpp"
#include "lorabam/error.hpp"
#include "lorabam/eval_harness.hpp"
#include "lorabam/experiment.hpp"
#include "lorabam/feature_store.hpp"
#include "lorabam/monitor_io.hpp"
#include "lorabam/random.hpp"
#include "lorabam/synthetic.hpp"
