#include "mfg/io.hpp"
#include "mfg/solver.hpp"

namespace mfg {

std::string report_csv(const RunReport& report) {
  std::string out = "epoch,dynamic,interaction,terminal,total,residual,fm_loss,clf_loss,wall_ms\n";
  for (const auto& r : report.epochs) {
    out += std::to_string(r.epoch);
    for (double v : {r.objective.dynamic, r.objective.interaction, r.objective.terminal, r.objective.total,
                     r.residual, r.fm_loss, r.clf_loss, r.wall_ms}) {
      out += ',';
      out += format_double(v);
    }
    out += '\n';
  }
  return out;
}

}  // namespace mfg
