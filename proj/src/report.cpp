// TSV and JSON renderings of the metrics reports.

#include <fmt/format.h>
#include <fmt/ostream.h>

#include <ostream>

#include "json.hpp"
#include "xquant/metrics.hpp"

namespace xquant {
namespace {

using nlohmann::ordered_json;

const char* side_label(CacheSide side) { return side == CacheSide::key ? "key" : "value"; }

ordered_json to_json(const BitwidthReport& r) {
  return {{"B_key", r.key}, {"B_value", r.value}, {"B_avg", r.average}};
}

void emit(std::ostream& out, const ordered_json& doc) { out << doc.dump(2) << '\n'; }

}  // namespace

void write_tsv(std::ostream& out, const BitwidthReport& report) {
  fmt::print(out, "# metric\tbits\n");
  fmt::print(out, "B_key\t{}\nB_value\t{}\nB_avg\t{}\n", report.key, report.value, report.average);
}

void write_tsv(std::ostream& out, const SimulationReport& report) {
  fmt::print(out, "# layer\tside\tmse\n");
  for (std::size_t l = 0; l < report.mse.per_layer.size(); ++l) {
    fmt::print(out, "{}\tkey\t{}\n", l, report.mse.per_layer[l][0]);
    fmt::print(out, "{}\tvalue\t{}\n", l, report.mse.per_layer[l][1]);
  }
  fmt::print(out, "# summary\tvalue\n");
  fmt::print(out, "overall_mse\t{}\n", report.mse.overall);
  fmt::print(out, "element_count\t{}\n", report.mse.element_count);
  fmt::print(out, "group_count\t{}\n", report.mse.group_count);
  fmt::print(out, "packed_tokens\t{}\n", report.packed_tokens);
  fmt::print(out, "residual_tokens\t{}\n", report.residual_tokens);
  fmt::print(out, "B_key\t{}\nB_value\t{}\nB_avg\t{}\n", report.bitwidth.key,
             report.bitwidth.value, report.bitwidth.average);
}

void write_tsv(std::ostream& out, std::span<const SweepRow> rows) {
  fmt::print(out, "# eta1\teta2\tmse\n");
  for (const auto& row : rows) {
    fmt::print(out, "{}\t{}\t{}\n", row.eta1, row.eta2, row.mse);
  }
}

void write_tsv(std::ostream& out, std::span<const LayerPairSimilarity> pairs) {
  const std::size_t deltas = pairs.empty() ? 0 : pairs.front().histogram.counts.size();
  fmt::print(out, "# layer_a\tlayer_b\tside");
  for (std::size_t d = 0; d < deltas; ++d) fmt::print(out, "\tshare_delta{}", d);
  fmt::print(out, "\tone_bit_agreement\ttotal\n");
  for (const auto& p : pairs) {
    fmt::print(out, "{}\t{}\t{}", p.layer, p.layer + 1, side_label(p.side));
    for (std::size_t d = 0; d < p.histogram.counts.size(); ++d) {
      fmt::print(out, "\t{}", p.histogram.share(d));
    }
    fmt::print(out, "\t{}\t{}\n", p.one_bit_agreement, p.histogram.total);
  }
}

void write_json(std::ostream& out, const BitwidthReport& report) { emit(out, to_json(report)); }

void write_json(std::ostream& out, const SimulationReport& report) {
  ordered_json layers = ordered_json::array();
  for (std::size_t l = 0; l < report.mse.per_layer.size(); ++l) {
    layers.push_back(
        {{"layer", l}, {"key", report.mse.per_layer[l][0]}, {"value", report.mse.per_layer[l][1]}});
  }
  emit(out, {{"mse",
              {{"overall", report.mse.overall},
               {"element_count", report.mse.element_count},
               {"group_count", report.mse.group_count},
               {"per_layer", layers}}},
             {"packed_tokens", report.packed_tokens},
             {"residual_tokens", report.residual_tokens},
             {"bitwidth", to_json(report.bitwidth)}});
}

void write_json(std::ostream& out, std::span<const SweepRow> rows) {
  ordered_json doc = ordered_json::array();
  for (const auto& row : rows) {
    doc.push_back({{"eta1", row.eta1}, {"eta2", row.eta2}, {"mse", row.mse}});
  }
  emit(out, doc);
}

void write_json(std::ostream& out, std::span<const LayerPairSimilarity> pairs) {
  ordered_json doc = ordered_json::array();
  for (const auto& p : pairs) {
    ordered_json shares = ordered_json::array();
    for (std::size_t d = 0; d < p.histogram.counts.size(); ++d) {
      shares.push_back(p.histogram.share(d));
    }
    doc.push_back({{"layer_a", p.layer},
                   {"layer_b", p.layer + 1},
                   {"side", side_label(p.side)},
                   {"counts", p.histogram.counts},
                   {"shares", shares},
                   {"one_bit_agreement", p.one_bit_agreement},
                   {"total", p.histogram.total}});
  }
  emit(out, doc);
}

}  // namespace xquant
