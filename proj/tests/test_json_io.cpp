#include <doctest.h>

#include <cmath>
#include <string>

#include "bevcoord/errors.hpp"
#include "bevcoord/json_io.hpp"

using namespace bevcoord;

TEST_CASE("canonical dump sorts keys and strips whitespace") {
  const Json j = parse_json(R"({ "b" : 1, "a" : { "d" : [1, 2], "c" : true } })",
                            "inline");
  CHECK(canonical_dump(j) == R"({"a":{"c":true,"d":[1,2]},"b":1})");
}

TEST_CASE("canonical dump prints floats at nine significant digits") {
  Json j;
  j["third"] = 1.0 / 3.0;
  j["tenth"] = 0.1;
  j["five"] = 5.0;
  j["neg"] = -2.25;
  CHECK(canonical_dump(j) ==
        R"({"five":5,"neg":-2.25,"tenth":0.1,"third":0.333333333})");
}

TEST_CASE("canonical dump keeps integers exact") {
  Json j;
  j["i"] = std::int64_t{-9007199254740993};
  j["u"] = std::uint64_t{18446744073709551615ULL};
  CHECK(canonical_dump(j) == R"({"i":-9007199254740993,"u":18446744073709551615})");
}

TEST_CASE("canonical encoding is a fixed point under reparse") {
  const Json j = parse_json(
      R"({"pi":3.14159265358979,"list":[0.1,0.2,1e-9],"s":"café","n":null})",
      "inline");
  const std::string once = canonical_dump(j);
  const std::string twice = canonical_dump(parse_json(once, "reparse"));
  CHECK(once == twice);
}

TEST_CASE("canonical number formats match embedded values") {
  CHECK(canonical_number(7.21342318) == "7.21342318");
  CHECK(canonical_number(2.0) == "2");
  CHECK(canonical_number(-0.0) == "0");
  CHECK(canonical_number(1.75937151) == "1.75937151");
}

TEST_CASE("non-finite numbers are rejected") {
  CHECK_THROWS_AS(canonical_number(std::nan("")), SchemaError);
  CHECK_THROWS_AS(canonical_number(INFINITY), SchemaError);
}

TEST_CASE("parse_json reports the source label on malformed input") {
  try {
    parse_json("{broken", "cfg.json");
    FAIL("expected SchemaError");
  } catch (const SchemaError& e) {
    CHECK(std::string(e.what()).find("cfg.json") != std::string::npos);
  }
}

TEST_CASE("parse_jsonl skips blank lines and labels by line number") {
  const auto values = parse_jsonl("{\"a\":1}\n\n  \n{\"b\":2}\n", "data.jsonl");
  REQUIRE(values.size() == 2);
  CHECK(values[1].at("b") == 2);
  try {
    parse_jsonl("{\"a\":1}\n{oops\n", "data.jsonl");
    FAIL("expected SchemaError");
  } catch (const SchemaError& e) {
    CHECK(std::string(e.what()).find("data.jsonl:2") != std::string::npos);
  }
}

TEST_CASE("dump_jsonl round trips") {
  const std::vector<Json> values = {parse_json("{\"x\":1}", "a"),
                                    parse_json("[1,2,3]", "b")};
  const std::string text = dump_jsonl(values);
  CHECK(text == "{\"x\":1}\n[1,2,3]\n");
  const auto back = parse_jsonl(text, "round");
  REQUIRE(back.size() == 2);
  CHECK(canonical_dump(back[0]) == canonical_dump(values[0]));
  CHECK(canonical_dump(back[1]) == canonical_dump(values[1]));
}
