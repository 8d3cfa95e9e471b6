// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include "pmclust/core.hpp"
#include "pmclust/distributions.hpp"
#include "pmclust/io.hpp"
#include "pmclust/metropolis.hpp"
#include "pmclust/models.hpp"
#include "pmclust/parallel.hpp"
#include "pmclust/relabel.hpp"
#include "pmclust/sampler.hpp"
#include "pmclust/selection.hpp"
#include "pmclust/simulate.hpp"
#include "pmclust/transforms.hpp"
