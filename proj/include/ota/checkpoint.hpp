#pragma once

#include <cstdio>
#include <cstdlib>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "ota/net.hpp"
#include "ota/rmsprop.hpp"

namespace ota {

// Text checkpoint encoding. Values are written as C hexfloats so a
// save/load round trip reproduces every double bit-for-bit while the file
// stays grep-able. Layout (one record per line, space separated):
//
//   otassign v1
//   net <layers>
//   layer <in> <out> <activation>
//   w <in*out hexfloats>
//   b <out hexfloats>
//   ...
//   rmsprop <alpha> <rho> <eps> <n> <n hexfloats>

namespace io_detail {

inline void write_double(std::ostream& os, double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%a", v);
  os << buf;
}

inline double read_double(std::istream& is) {
  std::string tok;
  if (!(is >> tok)) throw ParseError("checkpoint: unexpected end of stream");
  char* end = nullptr;
  const double v = std::strtod(tok.c_str(), &end);
  if (end == tok.c_str() || *end != '\0')
    throw ParseError("checkpoint: bad numeric token '" + tok + "'");
  return v;
}

inline std::string expect_word(std::istream& is, const char* what) {
  std::string tok;
  if (!(is >> tok)) throw ParseError(std::string("checkpoint: missing ") + what);
  return tok;
}

inline void expect_literal(std::istream& is, const std::string& lit) {
  const std::string tok = expect_word(is, lit.c_str());
  if (tok != lit) throw ParseError("checkpoint: expected '" + lit + "', got '" + tok + "'");
}

}  // namespace io_detail

inline void save_net(std::ostream& os, const DenseNet& net) {
  os << "net " << net.num_layers() << "\n";
  for (std::size_t li = 0; li < net.num_layers(); ++li) {
    const auto& L = net.layer(li);
    os << "layer " << L.in << " " << L.out << " " << to_string(L.act) << "\n";
    os << "w";
    for (double v : L.w_in_out.values()) {
      os << ' ';
      io_detail::write_double(os, v);
    }
    os << "\nb";
    for (double v : L.bias) {
      os << ' ';
      io_detail::write_double(os, v);
    }
    os << "\n";
  }
}

inline DenseNet load_net(std::istream& is) {
  using namespace io_detail;
  expect_literal(is, "net");
  std::size_t layers = 0;
  if (!(is >> layers) || layers == 0) throw ParseError("checkpoint: bad layer count");

  std::vector<std::size_t> dims;
  std::vector<Activation> acts;
  std::vector<std::vector<double>> ws, bs;
  for (std::size_t li = 0; li < layers; ++li) {
    expect_literal(is, "layer");
    std::size_t in = 0, out = 0;
    if (!(is >> in >> out)) throw ParseError("checkpoint: bad layer dims");
    acts.push_back(activation_from_string(expect_word(is, "activation")));
    if (li == 0) dims.push_back(in);
    if (!dims.empty() && dims.back() != in)
      throw ParseError("checkpoint: layer dims do not chain");
    dims.push_back(out);

    expect_literal(is, "w");
    std::vector<double> w(in * out);
    for (auto& v : w) v = read_double(is);
    expect_literal(is, "b");
    std::vector<double> b(out);
    for (auto& v : b) v = read_double(is);
    ws.push_back(std::move(w));
    bs.push_back(std::move(b));
  }

  DenseNet net(dims, acts);
  auto& raw = net.layers_mut_for_io();
  for (std::size_t li = 0; li < layers; ++li) {
    raw[li].w_in_out = Tensor({raw[li].in, raw[li].out}, std::move(ws[li]));
    raw[li].bias = std::move(bs[li]);
    raw[li].sync_transposed();
  }
  return net;
}

inline void save_rmsprop(std::ostream& os, const RmsPropState& st) {
  using namespace io_detail;
  os << "rmsprop ";
  write_double(os, st.opt.alpha);
  os << ' ';
  write_double(os, st.opt.rho);
  os << ' ';
  write_double(os, st.opt.eps);
  os << ' ' << st.acc.size();
  for (double v : st.acc) {
    os << ' ';
    write_double(os, v);
  }
  os << "\n";
}

inline RmsPropState load_rmsprop(std::istream& is) {
  using namespace io_detail;
  expect_literal(is, "rmsprop");
  RmsPropState st;
  st.opt.alpha = read_double(is);
  st.opt.rho = read_double(is);
  st.opt.eps = read_double(is);
  std::size_t n = 0;
  if (!(is >> n)) throw ParseError("checkpoint: bad rmsprop size");
  st.acc.resize(n);
  for (auto& v : st.acc) v = read_double(is);
  return st;
}

}  // namespace ota
