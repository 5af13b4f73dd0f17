#pragma once

#include "ovp/codec.hpp"
#include "ovp/compute.hpp"
#include "ovp/container.hpp"
#include "ovp/error.hpp"
#include "ovp/formats.hpp"
#include "ovp/quantizer.hpp"
