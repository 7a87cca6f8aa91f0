#pragma once

#include "feae/autograd.hpp"
#include "feae/config.hpp"
#include "feae/encoder.hpp"
#include "feae/errors.hpp"
#include "feae/fewshot.hpp"
#include "feae/flow_data.hpp"
#include "feae/graph.hpp"
#include "feae/matrix.hpp"
#include "feae/metrics.hpp"
#include "feae/optim.hpp"
#include "feae/pipeline.hpp"
#include "feae/rng.hpp"
#include "feae/ssl.hpp"
