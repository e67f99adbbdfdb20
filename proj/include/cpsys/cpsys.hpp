#ifndef CPSYS_CPSYS_HPP_
#define CPSYS_CPSYS_HPP_

#include "cpsys/band.hpp"
#include "cpsys/binning.hpp"
#include "cpsys/conformal_idr.hpp"
#include "cpsys/error.hpp"
#include "cpsys/eval.hpp"
#include "cpsys/io.hpp"
#include "cpsys/isotonic.hpp"
#include "cpsys/lspm.hpp"
#include "cpsys/parallel.hpp"
#include "cpsys/pipeline.hpp"
#include "cpsys/random.hpp"
#include "cpsys/sample.hpp"
#include "cpsys/scoring.hpp"
#include "cpsys/sim.hpp"
#include "cpsys/step_cdf.hpp"
#include "cpsys/version.hpp"

#endif  // CPSYS_CPSYS_HPP_
