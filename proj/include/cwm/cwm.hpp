#pragma once

#include "cwm/datagen.hpp"
#include "cwm/densities.hpp"
#include "cwm/em.hpp"
#include "cwm/error.hpp"
#include "cwm/io.hpp"
#include "cwm/linalg.hpp"
#include "cwm/metrics.hpp"
#include "cwm/model.hpp"
#include "cwm/repro.hpp"
#include "cwm/rng.hpp"
#include "cwm/robust.hpp"
#include "cwm/special.hpp"
#include "cwm/surfaces.hpp"
