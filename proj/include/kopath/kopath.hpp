#pragma once

#include "kopath/dataset.hpp"
#include "kopath/energy.hpp"
#include "kopath/error.hpp"
#include "kopath/flowmatch.hpp"
#include "kopath/kopt.hpp"
#include "kopath/parallel.hpp"
#include "kopath/quadrature.hpp"
#include "kopath/rng.hpp"
#include "kopath/schedule.hpp"
#include "kopath/separation.hpp"
#include "kopath/spline.hpp"
#include "kopath/svg.hpp"
#include "kopath/theory.hpp"
