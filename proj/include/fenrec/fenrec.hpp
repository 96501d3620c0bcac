#pragma once

// Umbrella header.

#include "fenrec/config.hpp"
#include "fenrec/data.hpp"
#include "fenrec/encoder.hpp"
#include "fenrec/errors.hpp"
#include "fenrec/experiment.hpp"
#include "fenrec/losses.hpp"
#include "fenrec/metrics.hpp"
#include "fenrec/negatives.hpp"
#include "fenrec/rng.hpp"
#include "fenrec/soft_label.hpp"
#include "fenrec/synthetic.hpp"
#include "fenrec/tensor.hpp"
#include "fenrec/trainer.hpp"
