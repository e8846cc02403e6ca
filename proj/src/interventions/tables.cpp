#include "plab/interventions/tables.hpp"

#include "plab/util/csv.hpp"
#include "plab/util/error.hpp"

namespace plab::interventions {

namespace {

CsvTable parse_checked(const std::string& text, const std::string& schema, int version) {
  CsvTable t = parse_csv(text);
  if (t.schema != schema || t.version != version) {
    throw DataError("csv: expected schema " + schema + " v" + std::to_string(version) + ", got " + t.schema + " v" +
                    std::to_string(t.version));
  }
  return t;
}

}  // namespace

std::string knockout_csv(std::span<const KnockoutRow> rows, const std::string& schema) {
  CsvWriter w(schema, kKnockoutVersion, {"sample_id", "layer", "p_before", "p_after", "delta_p", "mode"});
  for (const auto& r : rows) {
    w.cell(r.sample_id).cell(r.layer).cell(r.p_before).cell(r.p_after).cell(r.delta_p).cell(mode_name(r.mode));
    w.end_row();
  }
  return w.str();
}

std::vector<KnockoutRow> parse_knockout_csv(const std::string& text, const std::string& schema) {
  const auto t = parse_checked(text, schema, kKnockoutVersion);
  const auto c_id = t.column("sample_id"), c_l = t.column("layer"), c_b = t.column("p_before"),
             c_a = t.column("p_after"), c_d = t.column("delta_p"), c_m = t.column("mode");
  std::vector<KnockoutRow> out;
  out.reserve(t.rows.size());
  for (const auto& row : t.rows) {
    out.push_back({std::stoull(row[c_id]), std::stoull(row[c_l]), std::stod(row[c_b]), std::stod(row[c_a]),
                   std::stod(row[c_d]), parse_mode(row[c_m])});
  }
  return out;
}

std::string patch_csv(std::span<const PatchRow> rows) {
  CsvWriter w("patch", kPatchVersion,
              {"sample_id", "donor_id", "kind", "mode", "p_before", "p_exact", "p_random", "flip_exact", "flip_random"});
  for (const auto& r : rows) {
    w.cell(r.sample_id).cell(r.donor_id).cell(patch_kind_name(r.kind)).cell(mode_name(r.mode));
    w.cell(r.p_before).cell(r.p_exact).cell(r.p_random).cell(r.flip_exact ? 1 : 0).cell(r.flip_random ? 1 : 0);
    w.end_row();
  }
  return w.str();
}

std::vector<PatchRow> parse_patch_csv(const std::string& text) {
  const auto t = parse_checked(text, "patch", kPatchVersion);
  const auto c_id = t.column("sample_id"), c_d = t.column("donor_id"), c_k = t.column("kind"), c_m = t.column("mode"),
             c_b = t.column("p_before"), c_e = t.column("p_exact"), c_r = t.column("p_random"),
             c_fe = t.column("flip_exact"), c_fr = t.column("flip_random");
  std::vector<PatchRow> out;
  for (const auto& row : t.rows) {
    out.push_back({std::stoull(row[c_id]), std::stoull(row[c_d]), parse_patch_kind(row[c_k]), parse_mode(row[c_m]),
                   std::stod(row[c_b]), std::stod(row[c_e]), std::stod(row[c_r]), row[c_fe] == "1", row[c_fr] == "1"});
  }
  return out;
}

std::string answer_only_csv(std::span<const AnswerOnlyRow> rows) {
  CsvWriter w("answer_only", kAnswerOnlyVersion, {"sample_id", "mode", "p_full", "p_answer_only", "neg_delta_p"});
  for (const auto& r : rows) {
    w.cell(r.sample_id).cell(mode_name(r.mode)).cell(r.p_full).cell(r.p_answer_only).cell(r.neg_delta_p);
    w.end_row();
  }
  return w.str();
}

std::vector<AnswerOnlyRow> parse_answer_only_csv(const std::string& text) {
  const auto t = parse_checked(text, "answer_only", kAnswerOnlyVersion);
  const auto c_id = t.column("sample_id"), c_m = t.column("mode"), c_f = t.column("p_full"),
             c_a = t.column("p_answer_only"), c_d = t.column("neg_delta_p");
  std::vector<AnswerOnlyRow> out;
  for (const auto& row : t.rows) {
    out.push_back({std::stoull(row[c_id]), parse_mode(row[c_m]), std::stod(row[c_f]), std::stod(row[c_a]),
                   std::stod(row[c_d])});
  }
  return out;
}

std::string saliency_csv(std::span<const SaliencyRow> rows) {
  CsvWriter w("saliency", kSaliencyVersion, {"sample_id", "z", "eq_to_ea", "eq_to_all"});
  for (const auto& r : rows) {
    w.cell(r.sample_id).cell(r.z).cell(r.eq_to_ea).cell(r.eq_to_all);
    w.end_row();
  }
  return w.str();
}

std::string kde_csv(std::span<const NamedCurve> curves) {
  CsvWriter w("kde", kKdeVersion, {"series", "bandwidth", "fallback", "x", "density"});
  for (const auto& c : curves) {
    for (std::size_t k = 0; k < c.curve.x.size(); ++k) {
      w.cell(c.series).cell(c.curve.bandwidth).cell(c.curve.fallback ? 1 : 0).cell(c.curve.x[k]).cell(c.curve.density[k]);
      w.end_row();
    }
  }
  return w.str();
}

}  // namespace plab::interventions
