"""Digital self-interference cancellation workbench for full-duplex radio.

Synthesizes SI recordings from a closed-form transceiver impairment
chain, fits linear/polynomial/complex-valued-network cancelers, and
produces exact inference-cost reports.  See the README for the CLI and
file formats.
"""

__version__ = "0.1.0"

from .txchain import (  # noqa: E402
    Dataset,
    SIChannelModel,
    TxConfig,
    gen_qpsk_ofdm,
    iq_mixer,
    pa_hammerstein,
    read_csv_dataset,
    read_dataset,
    si_composite,
    synth_dataset,
    write_dataset,
)
from .cancelers import (  # noqa: E402
    CancelerSpec,
    CancelerStack,
    GridLayout,
    GridParams,
    PolyCanceler,
    TrainHyper,
    build_ffnn_layout,
    build_lwgs_layout,
    build_mwgs_layout,
    fit_linear_ls,
    fit_poly_ls,
    load_stack,
    predict_total,
    save_stack,
    train_nn,
    train_stack,
)
from .bench import (  # noqa: E402
    SplitSpec,
    boxplot_stats,
    cancellation_db,
    evaluate_stack,
    kfold_cv,
    mse,
    run_seeds,
    split_dataset,
)
from .flops import (  # noqa: E402
    closed_form,
    count_grid_complex_ops,
    report_table,
    table1_specs,
)

__all__ = [
    "__version__",
    "Dataset", "SIChannelModel", "TxConfig",
    "gen_qpsk_ofdm", "iq_mixer", "pa_hammerstein", "si_composite",
    "synth_dataset", "write_dataset", "read_dataset", "read_csv_dataset",
    "CancelerSpec", "CancelerStack", "GridLayout", "GridParams",
    "PolyCanceler", "TrainHyper",
    "build_lwgs_layout", "build_mwgs_layout", "build_ffnn_layout",
    "fit_linear_ls", "fit_poly_ls", "train_nn", "train_stack",
    "predict_total", "save_stack", "load_stack",
    "SplitSpec", "split_dataset", "kfold_cv", "mse", "cancellation_db",
    "evaluate_stack", "boxplot_stats", "run_seeds",
    "count_grid_complex_ops", "closed_form", "report_table", "table1_specs",
]
