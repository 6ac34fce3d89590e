#pragma once

// Everything in one include.

#include "hallreach/affine.hpp"
#include "hallreach/closed_loop.hpp"
#include "hallreach/controller.hpp"
#include "hallreach/dynamics.hpp"
#include "hallreach/env_server.hpp"
#include "hallreach/errors.hpp"
#include "hallreach/fixtures.hpp"
#include "hallreach/interval.hpp"
#include "hallreach/io_util.hpp"
#include "hallreach/json_util.hpp"
#include "hallreach/lidar.hpp"
#include "hallreach/reach.hpp"
#include "hallreach/scenario.hpp"
#include "hallreach/state.hpp"
#include "hallreach/track.hpp"
