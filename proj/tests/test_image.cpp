#include "doctest.h"
#include "smpcl/image.hpp"

using namespace smpcl;

TEST_CASE("label map helpers") {
  LabelMap m(2, 3);
  CHECK(m.labeled_count() == 0);
  m.at(0, 1) = 2;
  m.at(1, 2) = 0;
  CHECK(m.labeled(0, 1));
  CHECK_FALSE(m.labeled(0, 0));
  CHECK(m.classes_present() == std::vector<int>{0, 2});
  CHECK(m.mask(2).count() == 1);
  CHECK_NOTHROW(m.validate(3));
  CHECK_THROWS_AS(m.validate(2), ValidationError);
}

TEST_CASE("binary map algebra") {
  BinaryMap a(1, 3), b(1, 3);
  a[0] = 1;
  a[1] = 1;
  b[1] = 1;
  CHECK((a & b).count() == 1);
  CHECK((a | b).count() == 2);
  CHECK(b.subset_of(a));
  CHECK_FALSE(a.subset_of(b));
}

TEST_CASE("morphology with clipped square windows") {
  BinaryMap m(5, 5);
  m.at(0, 0) = 1;
  auto d = dilate(m, 3);
  CHECK(d.count() == 4);
  CHECK(d.at(1, 1) == 1);
  CHECK(dilate(m, 1) == m);
  CHECK(erode(d, 3).count() == 1);  // window clipped at the corner
  CHECK_THROWS_AS(dilate(m, 2), DomainError);

  BinaryMap block(7, 7);
  for (int r = 2; r < 5; ++r)
    for (int c = 2; c < 5; ++c) block.at(r, c) = 1;
  CHECK(open(block, 3) == block);
  CHECK(close(block, 3) == block);
  BinaryMap speck = block;
  speck.at(0, 6) = 1;
  CHECK(open(speck, 3) == block);
}
