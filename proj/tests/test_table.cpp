#include <algorithm>
#include <map>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "seqsynth/csv.hpp"
#include "seqsynth/table.hpp"

using namespace seqsynth;

namespace {

Metadata patient_metadata() {
  Metadata m;
  m.sequence_key = "patient";
  m.sequence_index = "day";
  m.context_columns = {"sex"};
  m.column_types = {{"sex", ColumnKind::categorical}, {"day", ColumnKind::discrete}, {"weight", ColumnKind::continuous}};
  return m;
}

RawTable patients() {
  return parse_csv(
      "patient,sex,day,weight\n"
      "0,F,1,60.5\n"
      "1,M,1,80\n"
      "0,F,2,61\n"
      "1,M,2,\n"
      "0,F,3,60.8\n"
      "1,M,3,81.25\n");
}

template <class Fn>
ErrorCode code_of(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::ParseError;
}

}  // namespace

TEST(Csv, ParsesQuotedFieldsAndEmbeddedNewlines) {
  const auto t = parse_csv("a,b\n\"x, y\",\"he said \"\"hi\"\"\"\n\"multi\nline\",\n");
  ASSERT_EQ(t.rows.size(), 2u);
  EXPECT_EQ(t.rows[0][0], "x, y");
  EXPECT_EQ(t.rows[0][1], "he said \"hi\"");
  EXPECT_EQ(t.rows[1][0], "multi\nline");
  EXPECT_EQ(t.rows[1][1], "");
}

TEST(Csv, HandlesCrlfBomAndBlankLines) {
  const auto t = parse_csv("\xEF\xBB\xBFk,v\r\n1,2\r\n\r\n3,4");
  EXPECT_EQ(t.header, (std::vector<std::string>{"k", "v"}));
  ASSERT_EQ(t.rows.size(), 2u);
  EXPECT_EQ(t.rows[1][1], "4");
}

TEST(Csv, QuotedEmptySingleColumnIsARecord) {
  const auto t = parse_csv("v\n\"\"\n");
  ASSERT_EQ(t.rows.size(), 1u);
  EXPECT_EQ(t.rows[0][0], "");
}

TEST(Csv, RaggedRowReportsLine) {
  try {
    parse_csv("a,b\n1,2\n3\n", "data.csv");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ParseError);
    EXPECT_NE(std::string(e.what()).find("data.csv:3"), std::string::npos);
  }
}

TEST(Csv, WriteThenParseRoundTrips) {
  RawTable t{{"a", "b"}, {{"plain", "with,comma"}, {"quote\"d", "line\nbreak"}, {"", "x"}}};
  const auto back = parse_csv(to_csv_string(t));
  EXPECT_EQ(back.header, t.header);
  EXPECT_EQ(back.rows, t.rows);
}

TEST(Metadata, JsonRoundTrip) {
  const auto m = patient_metadata();
  const auto back = metadata_from_json(to_json(m));
  EXPECT_EQ(back.sequence_key, m.sequence_key);
  EXPECT_EQ(back.sequence_index, m.sequence_index);
  EXPECT_EQ(back.context_columns, m.context_columns);
  EXPECT_EQ(back.column_types, m.column_types);
}

TEST(Metadata, MissingFieldIsUnknownColumn) {
  EXPECT_EQ(code_of([] { metadata_from_json(nlohmann::json{{"column_types", nlohmann::json::object()}}); }),
            ErrorCode::UnknownColumn);
  EXPECT_EQ(code_of([] { metadata_from_json(nlohmann::json{{"sequence_key", "k"}}); }), ErrorCode::UnknownColumn);
}

TEST(Datetime, ParseAndFormat) {
  const auto d = parse_datetime("2021-01-04");
  ASSERT_TRUE(d);
  EXPECT_FALSE(d->has_time);
  EXPECT_DOUBLE_EQ(d->epoch_seconds, 18631.0 * 86400.0);
  EXPECT_EQ(format_datetime(d->epoch_seconds, true), "2021-01-04");
  const auto t = parse_datetime("1969-12-31T23:59:30Z");
  ASSERT_TRUE(t);
  EXPECT_DOUBLE_EQ(t->epoch_seconds, -30.0);
  EXPECT_EQ(format_datetime(-30.0, false), "1969-12-31 23:59:30");
  EXPECT_FALSE(parse_datetime("2021-02-30"));
  EXPECT_FALSE(parse_datetime("yesterday"));
}

TEST(Validate, TwoPatientsThreeRowsEach) {
  const auto ds = validate(patients(), patient_metadata());
  const auto seqs = partition_sequences(ds);
  ASSERT_EQ(seqs.size(), 2u);
  EXPECT_EQ(seqs[0].key, "0");
  EXPECT_EQ(seqs[1].key, "1");
  EXPECT_EQ(seqs[0].steps.size(), 3u);
  EXPECT_EQ(as_label(seqs[1].context[0]), "M");
  // Steps exclude the key and context columns.
  EXPECT_EQ(seqs[0].steps[0].size(), 2u);
  EXPECT_TRUE(is_missing(seqs[1].steps[1][1]));
}

TEST(Validate, SingleRowNoContext) {
  Metadata m;
  m.sequence_key = "k";
  m.column_types = {{"v", ColumnKind::continuous}};
  const auto seqs = partition_sequences(validate(parse_csv("k,v\nA,1.5\n"), m));
  ASSERT_EQ(seqs.size(), 1u);
  EXPECT_EQ(seqs[0].steps.size(), 1u);
  EXPECT_TRUE(seqs[0].context.empty());
}

TEST(Validate, NonConstantContext) {
  Metadata m;
  m.sequence_key = "ticker";
  m.context_columns = {"Sector"};
  m.column_types = {{"Sector", ColumnKind::categorical}, {"close", ColumnKind::continuous}};
  EXPECT_EQ(code_of([&] { validate(parse_csv("ticker,Sector,close\nA,Tech,1\nA,Energy,2\n"), m); }),
            ErrorCode::NonConstantContext);
}

TEST(Validate, MetadataErrors) {
  auto m = patient_metadata();
  m.context_columns = {"nope"};
  EXPECT_EQ(code_of([&] { validate(patients(), m); }), ErrorCode::UnknownColumn);

  m = patient_metadata();
  m.column_types.erase("weight");
  EXPECT_EQ(code_of([&] { validate(patients(), m); }), ErrorCode::UnknownColumn);

  m = patient_metadata();
  m.column_types["day"] = ColumnKind::categorical;
  EXPECT_EQ(code_of([&] { validate(patients(), m); }), ErrorCode::UnorderableIndex);

  m = patient_metadata();
  m.context_columns = {"patient"};
  EXPECT_EQ(code_of([&] { validate(patients(), m); }), ErrorCode::InvalidConfig);

  m = patient_metadata();
  m.sequence_index = "patient";
  EXPECT_EQ(code_of([&] { validate(patients(), m); }), ErrorCode::InvalidConfig);
}

TEST(Validate, BadCells) {
  const auto m = patient_metadata();
  EXPECT_EQ(code_of([&] { validate(parse_csv("patient,sex,day,weight\n0,F,1,heavy\n"), m); }), ErrorCode::InvalidValue);
  EXPECT_EQ(code_of([&] { validate(parse_csv("patient,sex,day,weight\n0,F,1.5,3\n"), m); }), ErrorCode::InvalidValue);
  EXPECT_EQ(code_of([&] { validate(parse_csv("patient,sex,day,weight\n0,F,,3\n"), m); }), ErrorCode::UnorderableIndex);
  EXPECT_EQ(code_of([&] { validate(parse_csv("patient,sex,day,weight\n,F,1,3\n"), m); }), ErrorCode::InvalidValue);
}

TEST(Validate, BooleanBecomesTwoCanonicalCategories) {
  Metadata m;
  m.sequence_key = "k";
  m.column_types = {{"flag", ColumnKind::boolean}};
  const auto seqs = partition_sequences(validate(parse_csv("k,flag\na,true\na,0\na,False\na,\n"), m));
  ASSERT_EQ(seqs[0].steps.size(), 4u);
  EXPECT_EQ(as_label(seqs[0].steps[0][0]), "True");
  EXPECT_EQ(as_label(seqs[0].steps[1][0]), "False");
  EXPECT_EQ(as_label(seqs[0].steps[2][0]), "False");
  EXPECT_TRUE(is_missing(seqs[0].steps[3][0]));
}

TEST(Partition, AllRowsOneKey) {
  Metadata m;
  m.sequence_key = "k";
  m.column_types = {{"v", ColumnKind::continuous}};
  const auto seqs = partition_sequences(validate(parse_csv("k,v\nx,3\nx,1\nx,2\n"), m));
  ASSERT_EQ(seqs.size(), 1u);
  ASSERT_EQ(seqs[0].steps.size(), 3u);
  // No index: file order is kept.
  EXPECT_EQ(as_number(seqs[0].steps[0][0]), 3.0);
}

TEST(Partition, InterleavedKeysMatchGroupBySortOracle) {
  // Oracle: group rows by key with std::map and stable-sort each group by index.
  const std::vector<std::vector<std::string>> rows{{"B", "5", "b5"}, {"A", "2", "a2"}, {"B", "1", "b1"},
                                                   {"A", "1", "a1"}, {"B", "3", "b3"}, {"A", "2", "a2bis"}};
  RawTable t{{"key", "idx", "label"}, rows};
  Metadata m;
  m.sequence_key = "key";
  m.sequence_index = "idx";
  m.column_types = {{"idx", ColumnKind::discrete}, {"label", ColumnKind::categorical}};
  const auto seqs = partition_sequences(validate(t, m));

  std::map<std::string, std::vector<std::vector<std::string>>> groups;
  for (const auto& r : rows) groups[r[0]].push_back(r);
  for (auto& [k, g] : groups) {
    std::stable_sort(g.begin(), g.end(), [](const auto& a, const auto& b) { return std::stod(a[1]) < std::stod(b[1]); });
  }
  ASSERT_EQ(seqs.size(), 2u);
  for (const auto& s : seqs) {
    const auto& g = groups.at(s.key);
    ASSERT_EQ(s.steps.size(), g.size());
    for (std::size_t i = 0; i < g.size(); ++i) EXPECT_EQ(as_label(s.steps[i][1]), g[i][2]);
  }
  // First-appearance order of groups.
  EXPECT_EQ(seqs[0].key, "B");
}

TEST(Partition, ReassemblyIsABijection) {
  const auto ds = validate(patients(), patient_metadata());
  const auto seqs = partition_sequences(ds);
  EXPECT_EQ(assemble_rows(ds.schema, seqs), ds.rows);
}

TEST(Partition, ToRawTableWritesOriginalText) {
  const auto ds = validate(patients(), patient_metadata());
  const auto back = to_raw_table(ds.schema, ds.rows);
  EXPECT_EQ(back.header, patients().header);
  EXPECT_EQ(back.rows[0], (std::vector<std::string>{"0", "F", "1", "60.5"}));
  EXPECT_EQ(back.rows[4], (std::vector<std::string>{"1", "M", "2", ""}));
}
