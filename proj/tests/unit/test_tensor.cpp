#include "adq/error.hpp"
#include "adq/tensor.hpp"
#include "doctest.h"

#include <limits>

using namespace adq;

TEST_CASE("tensor construction and indexing")
{
    Tensor t({2, 3, 4, 5});
    CHECK(t.size() == 120);
    CHECK(t.rank() == 4);
    t.at(1, 2, 3, 4) = 7.0;
    CHECK(t[119] == 7.0);
    CHECK(t.reshaped({120}).dim(0) == 120);
    CHECK_THROWS_AS(t.reshaped({7}), InputError);
    CHECK_THROWS_AS(Tensor({2, 0}), InputError);
    CHECK_THROWS_AS(Tensor({2, 2}, std::vector<double>{1, 2, 3}), InputError);
    CHECK(shape_string({2, 3}) == "(2, 3)");
}

TEST_CASE("batch slicing copies contiguous samples")
{
    Tensor t({3, 2}, std::vector<double>{0, 1, 2, 3, 4, 5});
    const auto s = t.slice_batch(1, 2);
    CHECK(s.shape() == Shape{2, 2});
    CHECK(s.values() == std::vector<double>{2, 3, 4, 5});
    CHECK_THROWS(t.slice_batch(2, 2));
}

TEST_CASE("finiteness check")
{
    Tensor t({2}, 1.0);
    CHECK(t.all_finite());
    t[1] = std::numeric_limits<double>::quiet_NaN();
    CHECK_FALSE(t.all_finite());
}
