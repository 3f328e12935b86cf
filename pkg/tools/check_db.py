import os
import sys
import argparse

# 确保能够导入src包
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from src.utils.database import Database


def main() -> int:
    parser = argparse.ArgumentParser(description='检查事件存储的表结构、记录数和导入统计')
    parser.add_argument('db_path', nargs='?', default=os.path.join('output', 'events.sqlite'), help='事件存储路径')
    args = parser.parse_args()

    # 检查数据库文件是否存在
    if not os.path.exists(args.db_path):
        print(f"数据库文件不存在: {args.db_path}")
        return 1

    with Database(args.db_path) as db:
        cursor = db.conn.cursor()
        cursor.execute("SELECT name FROM sqlite_master WHERE type='table' ORDER BY name")
        tables = [row[0] for row in cursor.fetchall()]

        print("数据库中的表:")
        for table in tables:
            print(f"- {table}")
            cursor.execute(f"PRAGMA table_info({table})")
            print("  列结构:")
            for col in cursor.fetchall():
                print(f"  - {col[1]} ({col[2]})")
            cursor.execute(f"SELECT COUNT(*) FROM {table}")
            print(f"  记录数: {cursor.fetchone()[0]}")

        stats = db.get_ingest_stats()
        if stats:
            print("\n导入统计:")
            for kind, stat in stats.items():
                reasons = ', '.join(f"{reason}={count}" for reason, count in sorted(stat.rejected.items()))
                print(f"  - {kind}: 读取 {stat.read}, 接受 {stat.accepted}, 拒绝 {stat.rejected_total}"
                      + (f" ({reasons})" if reasons else ""))

        roster = db.get_roster()
        if roster:
            departments = {}
            for record in roster.values():
                departments[record.department] = departments.get(record.department, 0) + 1
            print("\n各部门人数:")
            for department, count in sorted(departments.items()):
                print(f"  - {department or '(空)'}: {count}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
