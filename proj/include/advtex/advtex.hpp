#pragma once

// Umbrella header.

#include "advtex/attack.hpp"
#include "advtex/config.hpp"
#include "advtex/defenses.hpp"
#include "advtex/eot.hpp"
#include "advtex/experiment.hpp"
#include "advtex/fbd.hpp"
#include "advtex/fixture.hpp"
#include "advtex/geometry.hpp"
#include "advtex/gradcheck.hpp"
#include "advtex/image.hpp"
#include "advtex/io.hpp"
#include "advtex/json_reader.hpp"
#include "advtex/logging.hpp"
#include "advtex/mesh.hpp"
#include "advtex/metrics.hpp"
#include "advtex/policy.hpp"
#include "advtex/renderer.hpp"
#include "advtex/rng.hpp"
#include "advtex/scenario.hpp"
#include "advtex/taao.hpp"
