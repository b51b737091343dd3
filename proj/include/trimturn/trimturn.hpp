#pragma once

#include "trimturn/error.hpp"
#include "trimturn/integrate.hpp"
#include "trimturn/linalg.hpp"
#include "trimturn/model.hpp"
#include "trimturn/newton.hpp"
#include "trimturn/pmp.hpp"
#include "trimturn/problems.hpp"
#include "trimturn/shooting.hpp"
#include "trimturn/steady.hpp"
#include "trimturn/turnpike.hpp"
