// SPDX-License-Identifier: Apache-2.0
// SPDX-FileCopyrightText: Copyright The Lakeflow Authors

fn main() {
    std::process::exit(lakeflow::cli::main_with_args(std::env::args_os()));
}
