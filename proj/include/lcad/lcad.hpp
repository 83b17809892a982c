#pragma once

#include "lcad/annotation.hpp"
#include "lcad/assess.hpp"
#include "lcad/enhance.hpp"
#include "lcad/image.hpp"
#include "lcad/image_io.hpp"
#include "lcad/massdetect.hpp"
#include "lcad/mcdetect.hpp"
#include "lcad/model_io.hpp"
#include "lcad/parallel.hpp"
#include "lcad/phantom.hpp"
#include "lcad/segment.hpp"
