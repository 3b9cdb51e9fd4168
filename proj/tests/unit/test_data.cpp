#include <doctest.h>

#include <sstream>

#include "semb/data.hpp"

using namespace semb;

TEST_CASE("pair classification records") {
  std::istringstream in(
      "{\"a\": \"x\", \"b\": \"y\", \"label\": \"entailment\"}\n"
      "\n"
      "{\"a\": \"x\", \"b\": \"z\", \"label\": 2}\n"
      "{\"a\": \"p\", \"b\": \"q\", \"label\": \"0\"}\n");
  const auto pairs = read_label_pairs(in);
  REQUIRE(pairs.size() == 3);
  CHECK(*pairs[0].label == 1);
  CHECK(*pairs[1].label == 2);
  CHECK(*pairs[2].label == 0);
  CHECK(parse_pair_label("contradiction") == 0);
  CHECK(parse_pair_label("neutral") == 2);
  CHECK_THROWS_AS(parse_pair_label("maybe"), InvalidArgument);
  CHECK_THROWS_AS(parse_pair_label("-1"), InvalidArgument);
}

TEST_CASE("malformed lines report their line number") {
  std::string text;
  for (int i = 1; i <= 16; ++i) text += "{\"a\": \"x\", \"b\": \"y\", \"score\": 1.5}\n";
  text += "{\"a\": \"x\", \"b\": \n";
  std::istringstream in(text);
  try {
    read_score_pairs(in);
    FAIL("expected a data error");
  } catch (const DataFormatError& e) {
    CHECK(e.line() == 17);
    CHECK(std::string(e.what()).find("line 17") != std::string::npos);
  }

  std::istringstream missing("{\"a\": \"x\", \"b\": \"y\"}\n");
  CHECK_THROWS_AS(read_score_pairs(missing), DataFormatError);
  std::istringstream wrong_type("{\"a\": 3, \"b\": \"y\", \"score\": 1}\n");
  CHECK_THROWS_AS(read_score_pairs(wrong_type), DataFormatError);
  std::istringstream array("[1, 2]\n");
  CHECK_THROWS_AS(read_triplets(array), DataFormatError);
  std::istringstream bad_label("{\"a\": \"x\", \"b\": \"y\", \"label\": 1.5}\n");
  CHECK_THROWS_AS(read_label_pairs(bad_label), DataFormatError);
}

TEST_CASE("triplet, probe and corpus records") {
  std::istringstream t("{\"anchor\": \"a\", \"positive\": \"p\", \"negative\": \"n\"}\n");
  const auto trips = read_triplets(t);
  REQUIRE(trips.size() == 1);
  CHECK(trips[0].negative == "n");

  std::istringstream p(
      "{\"text\": \"good\", \"label\": \"pos\"}\n{\"text\": \"bad\", \"label\": \"neg\"}\n"
      "{\"text\": \"fine\", \"label\": \"pos\"}\n");
  const auto probe = read_probe(p);
  CHECK(probe.labels == std::vector<std::size_t>{0, 1, 0});

  std::istringstream c("{\"id\": \"1\", \"text\": \"a\"}\n{\"id\": \"1\", \"text\": \"b\"}\n");
  try {
    read_corpus(c);
    FAIL("expected duplicate id error");
  } catch (const DataFormatError& e) {
    CHECK(e.line() == 2);
  }
}
