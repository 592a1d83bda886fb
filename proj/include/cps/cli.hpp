#pragma once
namespace cps { inline int run(int, char**) { return 0; } }
