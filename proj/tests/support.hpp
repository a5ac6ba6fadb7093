#pragma once

#include <catch_amalgamated.hpp>

#include <cstring>

#include "fixtures.hpp"
