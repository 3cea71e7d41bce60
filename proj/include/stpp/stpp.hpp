#ifndef STPP_STPP_HPP
#define STPP_STPP_HPP

#include "stpp/bandwidth.hpp"
#include "stpp/core.hpp"
#include "stpp/geometry.hpp"
#include "stpp/homogenize.hpp"
#include "stpp/inference.hpp"
#include "stpp/intensity.hpp"
#include "stpp/io.hpp"
#include "stpp/kdtree.hpp"
#include "stpp/parallel.hpp"
#include "stpp/secondorder.hpp"
#include "stpp/separability.hpp"
#include "stpp/simulate.hpp"
#include "stpp/version.hpp"
#include "stpp/voronoi.hpp"

#endif  // STPP_STPP_HPP
