#pragma once

#include "iball/config.hpp"
#include "iball/domains.hpp"
#include "iball/error.hpp"
#include "iball/eval.hpp"
#include "iball/ingest.hpp"
#include "iball/kernel.hpp"
#include "iball/linalg.hpp"
#include "iball/models.hpp"
#include "iball/normalize.hpp"
#include "iball/parallel.hpp"
#include "iball/serialize.hpp"
