#pragma once

#include "mtem/errors.hpp"
#include "mtem/io.hpp"
#include "mtem/linalg.hpp"
#include "mtem/model.hpp"
#include "mtem/montecarlo.hpp"
#include "mtem/parallel.hpp"
#include "mtem/paths.hpp"
#include "mtem/probes.hpp"
#include "mtem/random.hpp"
#include "mtem/scheme.hpp"
#include "mtem/truncation.hpp"
