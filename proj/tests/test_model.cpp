#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>
#include "moe/model.hpp"
TEST_CASE("placeholder") { CHECK(moe::sigmoid(0.0) == doctest::Approx(0.5)); }
