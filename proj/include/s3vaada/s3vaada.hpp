#pragma once

#include "s3vaada/errors.hpp"
#include "s3vaada/rng.hpp"
#include "s3vaada/prob_metrics.hpp"
#include "s3vaada/nn.hpp"
#include "s3vaada/perturb.hpp"
#include "s3vaada/vaada_train.hpp"
#include "s3vaada/selection.hpp"
#include "s3vaada/subsel.hpp"
#include "s3vaada/baselines.hpp"
#include "s3vaada/data_io.hpp"
#include "s3vaada/hash.hpp"
#include "s3vaada/active_loop.hpp"
#include "s3vaada/config.hpp"
#include "s3vaada/report.hpp"
#include "s3vaada/gradcheck.hpp"
#include "s3vaada/artifacts.hpp"
