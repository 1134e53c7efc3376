#include <cstdint>
#include <set>
#include <vector>

#include <catch2/catch_amalgamated.hpp>

#include "fiberlab/protocol.hpp"

using namespace fiberlab;

namespace {

ProtocolTree constant_tree(int n, double value) {
  ProtocolTree t;
  t.alice_bits = n;
  t.bob_bits = n;
  t.nodes.push_back(ProtoNode{true, value, Party::kAlice, DynBitset{}, -1, -1});
  t.root = 0;
  return t;
}

// Hand-built 1-bit protocol computing x_1 * y_1: Alice announces x_1, Bob
// announces x_1 * y_1, and the leaf repeats Bob's bit as a sign.
ProtocolTree product_tree() {
  ProtocolTree t;
  t.alice_bits = 1;
  t.bob_bits = 1;
  auto leaf = [&](double v) {
    t.nodes.push_back(ProtoNode{true, v, Party::kAlice, DynBitset{}, -1, -1});
    return static_cast<int>(t.nodes.size() - 1);
  };
  // Bob's node under Alice-message a: table bit = a xor y-bit, so the message
  // is 1 exactly when x_1 y_1 = -1.
  auto bob_node = [&](int a) {
    DynBitset table(2);
    table.set(0, a == 1);        // y index 0: y_1 = +1
    table.set(1, a == 0);        // y index 1: y_1 = -1
    const int plus = leaf(1.0);  // message 0 -> product +1
    const int minus = leaf(-1.0);
    t.nodes.push_back(ProtoNode{false, 0.0, Party::kBob, table, plus, minus});
    return static_cast<int>(t.nodes.size() - 1);
  };
  DynBitset alice_table(2);
  alice_table.set(1, true);  // Alice sends the raw bit of x
  const int zero = bob_node(0);
  const int one = bob_node(1);
  t.nodes.push_back(
      ProtoNode{false, 0.0, Party::kAlice, alice_table, zero, one});
  t.root = static_cast<int>(t.nodes.size() - 1);
  return t;
}

}  // namespace

TEST_CASE("dynamic bitset basics") {
  DynBitset b(130);
  CHECK(b.size() == 130);
  CHECK(!b.any());
  b.set(0);
  b.set(64);
  b.set(129);
  CHECK(b.count() == 3);
  CHECK(b.test(64));
  CHECK(!b.test(63));

  DynBitset full(130, true);
  CHECK(full.count() == 130);
  DynBitset copy = full;
  copy &= b;
  CHECK(copy == b);
  CHECK(copy.intersects(full));
  DynBitset empty(130);
  CHECK(!empty.intersects(full));
}

TEST_CASE("constant tree evaluates with empty transcript") {
  const ProtocolTree t = constant_tree(2, 0.75);
  t.validate();
  CHECK(t.cost() == 0);
  CHECK(t.leaf_count() == 1);
  const EvalResult r = evaluate(t, 3, 1);
  CHECK(r.value == 0.75);
  CHECK(r.transcript.empty());
}

TEST_CASE("hand-built product protocol computes x1 * y1") {
  const ProtocolTree t = product_tree();
  t.validate();
  CHECK(t.cost() == 2);
  CHECK(t.leaf_count() == 4);
  for (std::uint64_t x = 0; x < 2; ++x)
    for (std::uint64_t y = 0; y < 2; ++y) {
      const double x1 = x ? -1.0 : 1.0;
      const double y1 = y ? -1.0 : 1.0;
      const EvalResult r = evaluate(t, x, y);
      CHECK(r.value == x1 * y1);
      REQUIRE(r.transcript.size() == 2);
      CHECK(r.transcript[0] == static_cast<int>(x));
    }
}

TEST_CASE("evaluate rejects malformed input") {
  const ProtocolTree t = product_tree();
  CHECK_THROWS_AS(evaluate(t, 2, 0), std::invalid_argument);
  CHECK_THROWS_AS(evaluate(t, 0, 5), std::invalid_argument);
  ProtocolTree broken = t;
  broken.nodes[broken.root].zero_child = 99;
  CHECK_THROWS_AS(broken.validate(), std::invalid_argument);
  ProtocolTree bad_leaf = t;
  bad_leaf.nodes[0].value = 1.5;
  CHECK_THROWS_AS(bad_leaf.validate(), std::invalid_argument);
}

TEST_CASE("majority-of-xor protocol evaluates the composed function") {
  const int d = 3, n = 3;
  const ProtocolTree t = maj_xor_protocol(d, n);
  t.validate();
  CHECK(t.cost() == d + 1);
  for (std::uint64_t x = 0; x < 8; ++x)
    for (std::uint64_t y = 0; y < 8; ++y) {
      const std::uint64_t z = x ^ y;  // sign products coordinate-wise
      int minus = 0;
      for (int i = 0; i < d; ++i) minus += (z >> i) & 1u;
      const double expected = (2 * minus < d) ? 1.0 : -1.0;
      CHECK(evaluate(t, x, y).value == expected);
    }
}

TEST_CASE("majority-of-xor protocol validates its arguments") {
  CHECK_THROWS_AS(maj_xor_protocol(2, 3), std::invalid_argument);
  CHECK_THROWS_AS(maj_xor_protocol(5, 3), std::invalid_argument);
}

TEST_CASE("leaf rectangles partition the product domain") {
  for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
    const ProtocolTree t = random_protocol(4, 5, seed);
    t.validate();
    const auto rects = leaf_rectangles(t);
    CHECK(rects.size() == t.leaf_count());
    CHECK(rects.size() <= (1u << 5));
    std::vector<int> cover(16 * 16, 0);
    for (const auto& [rect, value] : rects) {
      CHECK(rect.alice_set.size() == 16);
      CHECK(rect.bob_set.size() == 16);
      for (std::size_t x = 0; x < 16; ++x)
        for (std::size_t y = 0; y < 16; ++y)
          if (rect.alice_set.test(x) && rect.bob_set.test(y))
            ++cover[x * 16 + y];
    }
    for (int c : cover) CHECK(c == 1);
  }
}

TEST_CASE("evaluation agrees with the containing rectangle's leaf value") {
  const ProtocolTree t = random_protocol(3, 4, 17, /*real_leaves=*/true);
  const auto rects = leaf_rectangles(t);
  for (std::uint64_t x = 0; x < 8; ++x)
    for (std::uint64_t y = 0; y < 8; ++y) {
      const double direct = evaluate(t, x, y).value;
      int hits = 0;
      double rect_value = 0.0;
      for (const auto& [rect, value] : rects)
        if (rect.alice_set.test(x) && rect.bob_set.test(y)) {
          ++hits;
          rect_value = value;
        }
      REQUIRE(hits == 1);
      CHECK(direct == rect_value);
    }
}

TEST_CASE("parity decision tree evaluation and depth") {
  // Root queries z_{1,2}; plus branch queries z_1, minus branch is a leaf.
  ParityDT dt;
  dt.n = 2;
  dt.nodes.push_back({true, 1.0, 0, -1, -1});    // 0: leaf +1
  dt.nodes.push_back({true, -1.0, 0, -1, -1});   // 1: leaf -1
  dt.nodes.push_back({false, 0.0, 0b01, 0, 1});  // 2: query z_1
  dt.nodes.push_back({true, -1.0, 0, -1, -1});   // 3: leaf -1
  dt.nodes.push_back({false, 0.0, 0b11, 2, 3});  // 4: query z_1 z_2
  dt.root = 4;
  CHECK(dt.depth() == 2);
  CHECK(dt.evaluate(0b00) == 1.0);   // z = (+,+): z12 = +1, z1 = +1
  CHECK(dt.evaluate(0b01) == -1.0);  // z = (-,+): z12 = -1
  CHECK(dt.evaluate(0b10) == -1.0);  // z = (+,-): z12 = -1
  CHECK(dt.evaluate(0b11) == -1.0);  // z = (-,-): z12 = +1, z1 = -1
}

TEST_CASE("parity decision tree simulation matches on the xor diagonal") {
  for (std::uint64_t seed : {5ull, 6ull}) {
    const ParityDT dt = random_parity_dt(3, 2, seed);
    const ProtocolTree t = from_parity_dt(dt);
    t.validate();
    CHECK(t.cost() == 2 * dt.depth());
    for (std::uint64_t x = 0; x < 8; ++x)
      for (std::uint64_t y = 0; y < 8; ++y)
        CHECK(evaluate(t, x, y).value ==
              dt.evaluate(static_cast<std::uint32_t>(x ^ y)));
  }
}

TEST_CASE("random generators are reproducible and respect parameters") {
  const ProtocolTree a = random_protocol(4, 6, 99);
  const ProtocolTree b = random_protocol(4, 6, 99);
  CHECK(protocol_to_json(a).dump() == protocol_to_json(b).dump());
  const ProtocolTree c = random_protocol(4, 6, 100);
  CHECK(protocol_to_json(a).dump() != protocol_to_json(c).dump());
  CHECK(a.cost() == 6);

  const ProtocolTree zero_round = random_protocol(3, 0, 1);
  CHECK(zero_round.cost() == 0);
  CHECK(zero_round.leaf_count() == 1);
  CHECK_THROWS_AS(random_protocol(2, 5, 1), std::invalid_argument);

  const ParityDT dt1 = random_parity_dt(5, 3, 4);
  const ParityDT dt2 = random_parity_dt(5, 3, 4);
  REQUIRE(dt1.nodes.size() == dt2.nodes.size());
  CHECK(dt1.depth() == 3);
  for (std::uint32_t z = 0; z < 32; ++z)
    CHECK(dt1.evaluate(z) == dt2.evaluate(z));
}

TEST_CASE("randomized protocol validation") {
  RandomizedProtocol mix;
  mix.components.emplace_back(0.5, constant_tree(2, 1.0));
  mix.components.emplace_back(0.5, constant_tree(2, -1.0));
  mix.validate();
  mix.components[0].first = 0.6;
  CHECK_THROWS_AS(mix.validate(), std::invalid_argument);
  mix.components[0].first = -0.5;
  CHECK_THROWS_AS(mix.validate(), std::invalid_argument);
}

TEST_CASE("protocol json round trip preserves semantics and bytes") {
  const ProtocolTree t = maj_xor_protocol(3, 4);
  const nlohmann::json j = protocol_to_json(t);
  const ProtocolTree back = protocol_from_json(j);
  back.validate();
  CHECK(protocol_to_json(back).dump() == j.dump());
  for (std::uint64_t x = 0; x < 16; ++x)
    for (std::uint64_t y = 0; y < 16; ++y)
      CHECK(evaluate(back, x, y).value == evaluate(t, x, y).value);

  // Schema spot checks.
  CHECK(j["alice_bits"] == 4);
  CHECK(j["root"].contains("owner"));
  CHECK(j["root"]["owner"] == "B");
  CHECK(j["root"]["msg"].is_string());
}
