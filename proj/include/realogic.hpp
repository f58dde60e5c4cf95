#pragma once

#include "realogic/scalar.hpp"
#include "realogic/sexpr.hpp"
#include "realogic/structure.hpp"
#include "realogic/formula.hpp"
#include "realogic/eval.hpp"
#include "realogic/machine.hpp"
#include "realogic/transforms.hpp"
#include "realogic/passes.hpp"
#include "realogic/compiler.hpp"
#include "realogic/pteam.hpp"
#include "realogic/smtlib.hpp"
