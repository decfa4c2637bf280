#include <cstdio>
#include <fstream>
#include <sstream>

#include "fuzzyseg/errors.hpp"
#include "fuzzyseg/harness.hpp"
#include "fuzzyseg/pseudolabel.hpp"

namespace fuzzyseg {
namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void put(const std::filesystem::path& path, const std::string& text) { write_file(path.string(), text); }

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  return out;
}

}  // namespace

std::string loss_csv(const std::vector<MetricsRecord>& records, bool verbose) {
  std::ostringstream os;
  os << "iter,L_s,L_u,L_c,L_total,N_valid";
  std::size_t c = 0;
  if (verbose) {
    for (const auto& r : records) c = std::max(c, r.class_weights.size());
    for (std::size_t k = 0; k < c; ++k) os << ",w_" << k;
  }
  os << "\n";
  for (const auto& r : records) {
    os << r.iteration << ',' << num(r.loss.supervised) << ',' << num(r.loss.unsupervised) << ','
       << num(r.loss.contrastive) << ',' << num(r.loss.total) << ',' << num(r.loss.n_valid);
    if (verbose) {
      for (std::size_t k = 0; k < c; ++k) {
        os << ',' << (k < r.class_weights.size() ? num(r.class_weights[k]) : std::string("1"));
      }
    }
    os << "\n";
  }
  return os.str();
}

std::string eval_csv_header(std::size_t num_classes) {
  std::string s = "iter,split";
  for (std::size_t k = 0; k < num_classes; ++k) s += ",iou_" + std::to_string(k);
  return s + ",miou,pixel_acc\n";
}

std::string eval_csv_row(std::size_t iteration, const EvalResult& e) {
  std::ostringstream os;
  os << iteration << ',' << e.split;
  for (std::size_t k = 0; k < e.iou.iou.size(); ++k) {
    os << ',' << (e.iou.present[k] ? num(e.iou.iou[k]) : std::string("nan"));
  }
  os << ',' << num(e.miou) << ',' << num(e.pixel_accuracy) << "\n";
  return os.str();
}

std::vector<double> smooth(const std::vector<double>& series, std::size_t window) {
  std::vector<double> out(series.size());
  if (series.empty()) return out;
  window = std::clamp<std::size_t>(window, 1, series.size());
  for (std::size_t i = 0; i < series.size(); ++i) {
    const std::size_t lo = i + 1 >= window ? i + 1 - window : 0;
    double s = 0.0;
    for (std::size_t j = lo; j <= i; ++j) s += series[j];
    out[i] = s / static_cast<double>(i + 1 - lo);
  }
  return out;
}

LossSeries parse_loss_csv(const std::string& csv) {
  LossSeries s;
  std::stringstream ss(csv);
  std::string line;
  if (!std::getline(ss, line) || line.rfind("iter,L_s,L_u,L_c,L_total", 0) != 0) {
    throw IoError("loss csv: unexpected header");
  }
  while (std::getline(ss, line)) {
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() < 6) throw IoError("loss csv: short row");
    s.iteration.push_back(std::stoull(cells[0]));
    s.supervised.push_back(std::stod(cells[1]));
    s.unsupervised.push_back(std::stod(cells[2]));
    s.contrastive.push_back(std::stod(cells[3]));
    s.total.push_back(std::stod(cells[4]));
  }
  return s;
}

void write_report(const std::vector<MetricsRecord>& records, const std::vector<EvalResult>& final_evals,
                  const std::filesystem::path& out_dir, bool verbose, std::size_t window) {
  if (records.empty()) throw ArgumentError("write_report: no records");
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create '" + out_dir.string() + "': " + ec.message());

  put(out_dir / "loss.csv", loss_csv(records, verbose));

  std::size_t c = 0;
  for (const auto& r : records)
    if (r.eval) c = r.eval->iou.iou.size();
  for (const auto& e : final_evals) c = e.iou.iou.size();
  std::string eval = eval_csv_header(c);
  for (const auto& r : records)
    if (r.eval) eval += eval_csv_row(r.iteration, *r.eval);
  for (const auto& e : final_evals) eval += eval_csv_row(records.back().iteration, e);
  put(out_dir / "eval.csv", eval);

  std::vector<double> ls, lu, lc, lt;
  for (const auto& r : records) {
    ls.push_back(r.loss.supervised);
    lu.push_back(r.loss.unsupervised);
    lc.push_back(r.loss.contrastive);
    lt.push_back(r.loss.total);
  }
  const auto sls = smooth(ls, window), slu = smooth(lu, window), slc = smooth(lc, window),
             slt = smooth(lt, window);
  std::ostringstream sm;
  sm << "iter,L_s,L_u,L_c,L_total\n";
  for (std::size_t i = 0; i < records.size(); ++i) {
    sm << records[i].iteration << ',' << num(sls[i]) << ',' << num(slu[i]) << ',' << num(slc[i]) << ','
       << num(slt[i]) << "\n";
  }
  put(out_dir / "smoothed.csv", sm.str());

  std::ostringstream tm;
  tm << "iter,lr,wall_seconds\n";
  for (const auto& r : records) tm << r.iteration << ',' << num(r.lr) << ',' << num(r.wall_seconds) << "\n";
  put(out_dir / "timing.csv", tm.str());
}

void write_panels(const ParameterStore& params, const TrainConfig& config, const Dataset& eval,
                  const std::filesystem::path& out_dir, std::size_t count) {
  count = std::min(count, eval.scenes.size());
  if (count == 0) return;
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create '" + out_dir.string() + "': " + ec.message());
  const SegNetConfig net = config.net();
  const LabelMap pred = predict(params, net, eval, 0, count);

  std::vector<Tensor> imgs;
  for (std::size_t i = 0; i < count; ++i) imgs.push_back(eval.scenes[i].image);
  tk::Graph g;
  const ParamVars vars = bind_params(g, params, false);
  Shape s{count, 3, eval.scenes[0].image.dim(1), eval.scenes[0].image.dim(2)};
  Tensor batch(s);
  for (std::size_t i = 0; i < count; ++i) {
    std::copy(imgs[i].values().begin(), imgs[i].values().end(), batch.data() + i * imgs[i].numel());
  }
  const Tensor probs = tk::softmax_values(forward(vars, g.constant(batch), net).logits.value(), 1);
  const PixelWeightMap pw = make_pixel_weight_map(probs, config.tau);
  const std::size_t h = s[2], w = s[3];

  for (std::size_t i = 0; i < count; ++i) {
    const std::string stem = "scene" + std::to_string(i);
    put(out_dir / (stem + "_input.ppm"), export_ppm(eval.scenes[i].image));
    put(out_dir / (stem + "_truth.ppm"), export_ppm(eval.scenes[i].labels));
    put(out_dir / (stem + "_pred.ppm"), export_ppm(pred, i));
    Tensor ent({h, w}), wt({h, w});
    for (std::size_t p = 0; p < h * w; ++p) {
      ent[p] = pw.entropy[i * h * w + p];
      wt[p] = pw.weight[i * h * w + p];
    }
    put(out_dir / (stem + "_entropy.pgm"), export_pgm(ent));
    put(out_dir / (stem + "_weight.pgm"), export_pgm(wt));
  }
}

}  // namespace fuzzyseg
